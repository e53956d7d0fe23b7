#pragma once

#include "bayesrank/acquisition.hpp"
#include "bayesrank/data_model.hpp"
#include "bayesrank/errors.hpp"
#include "bayesrank/eval_stats.hpp"
#include "bayesrank/external_scorer.hpp"
#include "bayesrank/gp.hpp"
#include "bayesrank/kernels.hpp"
#include "bayesrank/manifest.hpp"
#include "bayesrank/random.hpp"
#include "bayesrank/rerank.hpp"
#include "bayesrank/scorer_spec.hpp"
#include "bayesrank/scorers.hpp"
#include "bayesrank/synthetic.hpp"
