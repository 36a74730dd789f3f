#pragma once

#include "spotgcn/annotations.hpp"
#include "spotgcn/checkpoint.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/evalkit.hpp"
#include "spotgcn/facial_graph.hpp"
#include "spotgcn/image.hpp"
#include "spotgcn/intervals.hpp"
#include "spotgcn/losses.hpp"
#include "spotgcn/model.hpp"
#include "spotgcn/motion.hpp"
#include "spotgcn/optim.hpp"
#include "spotgcn/plot.hpp"
#include "spotgcn/rng.hpp"
#include "spotgcn/spotting.hpp"
#include "spotgcn/synth.hpp"
#include "spotgcn/tensor.hpp"
#include "spotgcn/trainer.hpp"
