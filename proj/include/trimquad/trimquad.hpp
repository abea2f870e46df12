#pragma once

#include "trimquad/error.hpp"
#include "trimquad/spline.hpp"
#include "trimquad/quadrature.hpp"
#include "trimquad/trim.hpp"
#include "trimquad/fem.hpp"
#include "trimquad/bench.hpp"
