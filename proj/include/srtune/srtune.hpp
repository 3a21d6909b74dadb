#ifndef SRTUNE_SRTUNE_HPP
#define SRTUNE_SRTUNE_HPP

#include "srtune/errors.hpp"
#include "srtune/rng.hpp"
#include "srtune/geometry.hpp"
#include "srtune/parallel.hpp"
#include "srtune/phantom.hpp"
#include "srtune/series.hpp"
#include "srtune/forward_model.hpp"
#include "srtune/acquisition.hpp"
#include "srtune/linear_operator.hpp"
#include "srtune/gradient.hpp"
#include "srtune/solvers.hpp"
#include "srtune/metrics.hpp"
#include "srtune/stats.hpp"
#include "srtune/tuner.hpp"
#include "srtune/nifti.hpp"
#include "srtune/io.hpp"
#include "srtune/cli.hpp"

#endif // SRTUNE_SRTUNE_HPP
