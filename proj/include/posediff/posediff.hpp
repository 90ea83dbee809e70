#pragma once

#include "posediff/tensor.hpp"
#include "posediff/rng.hpp"
#include "posediff/skeleton_layout.hpp"
#include "posediff/pose.hpp"
#include "posediff/guidance.hpp"
#include "posediff/region_weights.hpp"
#include "posediff/diffusion.hpp"
#include "posediff/posenet.hpp"
#include "posediff/fusion.hpp"
#include "posediff/mmtl.hpp"
#include "posediff/run_config.hpp"
