#pragma once

// Convenience umbrella: the whole library in one include.

#include "recap/backends.hpp"
#include "recap/config.hpp"
#include "recap/corpus.hpp"
#include "recap/errors.hpp"
#include "recap/evaluation.hpp"
#include "recap/experiment.hpp"
#include "recap/hash.hpp"
#include "recap/http_client.hpp"
#include "recap/ingest.hpp"
#include "recap/labeling.hpp"
#include "recap/line2note.hpp"
#include "recap/llm_rerank.hpp"
#include "recap/numeric.hpp"
#include "recap/ranking.hpp"
#include "recap/rng.hpp"
#include "recap/segmenter.hpp"
#include "recap/snippet.hpp"
#include "recap/supervised.hpp"
#include "recap/text.hpp"
#include "recap/tokenizer.hpp"
