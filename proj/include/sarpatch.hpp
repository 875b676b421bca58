#pragma once

#include "sarpatch/error.hpp"
#include "sarpatch/geotiff.hpp"
#include "sarpatch/gradcheck.hpp"
#include "sarpatch/legend.hpp"
#include "sarpatch/metrics.hpp"
#include "sarpatch/mim.hpp"
#include "sarpatch/parallel.hpp"
#include "sarpatch/patch_io.hpp"
#include "sarpatch/patchify.hpp"
#include "sarpatch/raster.hpp"
#include "sarpatch/rng.hpp"
#include "sarpatch/sampler.hpp"
#include "sarpatch/scene_prep.hpp"
#include "sarpatch/seg_loss.hpp"
