#pragma once

#include "fbrank/config.hpp"
#include "fbrank/corpus.hpp"
#include "fbrank/embedding.hpp"
#include "fbrank/error.hpp"
#include "fbrank/eval.hpp"
#include "fbrank/fusion.hpp"
#include "fbrank/index.hpp"
#include "fbrank/index_store.hpp"
#include "fbrank/indicators.hpp"
#include "fbrank/query.hpp"
#include "fbrank/ranker.hpp"
#include "fbrank/text.hpp"
#include "fbrank/timestamp.hpp"
