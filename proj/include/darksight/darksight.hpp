#pragma once

// Umbrella header for the dark-video analysis toolkit.

#include "darksight/config.hpp"
#include "darksight/curate.hpp"
#include "darksight/error.hpp"
#include "darksight/gdq.hpp"
#include "darksight/lam.hpp"
#include "darksight/pipeline.hpp"
#include "darksight/ram.hpp"
#include "darksight/rng.hpp"
#include "darksight/tcm.hpp"
#include "darksight/tensor.hpp"
#include "darksight/video_io.hpp"
