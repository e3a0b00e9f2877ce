#pragma once

#include "exrange/consistency.hpp"
#include "exrange/error.hpp"
#include "exrange/extremal_range.hpp"
#include "exrange/geometry.hpp"
#include "exrange/grid.hpp"
#include "exrange/io.hpp"
#include "exrange/morphology.hpp"
#include "exrange/parallel.hpp"
#include "exrange/pipeline.hpp"
#include "exrange/raster.hpp"
#include "exrange/simgrf.hpp"
#include "exrange/tailfit.hpp"
#include "exrange/thresholds.hpp"
