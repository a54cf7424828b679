#pragma once

#include "anms.hpp"
#include "config.hpp"
#include "core.hpp"
#include "detector.hpp"
#include "evalkit.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "kdtree.hpp"
#include "matcher.hpp"
#include "odometry.hpp"
#include "parallel.hpp"
#include "plot.hpp"
#include "synth.hpp"
