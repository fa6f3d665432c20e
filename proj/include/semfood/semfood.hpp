#pragma once

#include "semfood/geometry.hpp"
#include "semfood/mask.hpp"
#include "semfood/detection.hpp"
#include "semfood/fusion.hpp"
#include "semfood/metrics.hpp"
#include "semfood/pgm.hpp"
#include "semfood/dataset.hpp"
#include "semfood/pipeline.hpp"
#include "semfood/fixtures.hpp"
