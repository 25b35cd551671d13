#ifndef HELIOX_HELIOX_HPP
#define HELIOX_HELIOX_HPP

#include "heliox/core.hpp"
#include "heliox/features.hpp"
#include "heliox/learners/model.hpp"
#include "heliox/metrics.hpp"
#include "heliox/pipeline.hpp"
#include "heliox/schemes.hpp"
#include "heliox/stats.hpp"
#include "heliox/synthgen.hpp"

#endif  // HELIOX_HELIOX_HPP
