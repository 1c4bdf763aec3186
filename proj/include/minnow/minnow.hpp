#pragma once

#include "minnow/checkpoint.hpp"
#include "minnow/config.hpp"
#include "minnow/dataset.hpp"
#include "minnow/episode.hpp"
#include "minnow/error.hpp"
#include "minnow/evaluator.hpp"
#include "minnow/generator.hpp"
#include "minnow/model.hpp"
#include "minnow/optim.hpp"
#include "minnow/rng.hpp"
#include "minnow/tensor.hpp"
#include "minnow/text.hpp"
#include "minnow/trainer.hpp"
