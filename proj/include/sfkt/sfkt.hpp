#pragma once

#include "sfkt/core/errors.hpp"
#include "sfkt/core/graph.hpp"
#include "sfkt/core/grad_check.hpp"
#include "sfkt/core/rng.hpp"
#include "sfkt/core/tensor.hpp"
#include "sfkt/data/csv.hpp"
#include "sfkt/data/interaction.hpp"
#include "sfkt/data/pipeline.hpp"
#include "sfkt/eval/evaluate.hpp"
#include "sfkt/eval/metrics.hpp"
#include "sfkt/eval/similarity.hpp"
#include "sfkt/io/binary.hpp"
#include "sfkt/io/cache.hpp"
#include "sfkt/io/checkpoint.hpp"
#include "sfkt/model/config.hpp"
#include "sfkt/model/long_term.hpp"
#include "sfkt/model/network.hpp"
#include "sfkt/model/total_term.hpp"
#include "sfkt/train/adam.hpp"
#include "sfkt/train/init.hpp"
#include "sfkt/train/trainer.hpp"
#include "sfkt/verify/checks.hpp"
