#pragma once

// Umbrella header for the stroke-patch stylization pipeline.

#include "strokepatch/adam.hpp"
#include "strokepatch/checkpoint.hpp"
#include "strokepatch/common.hpp"
#include "strokepatch/imageops.hpp"
#include "strokepatch/parallel.hpp"
#include "strokepatch/patchset.hpp"
#include "strokepatch/png_io.hpp"
#include "strokepatch/raster.hpp"
#include "strokepatch/rng.hpp"
#include "strokepatch/style.hpp"
#include "strokepatch/stylize.hpp"
#include "strokepatch/tensor.hpp"
#include "strokepatch/trainer.hpp"
#include "strokepatch/unet.hpp"
