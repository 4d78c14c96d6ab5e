#pragma once

#include "freeprob/errors.hpp"
#include "freeprob/freeconv.hpp"
#include "freeprob/matrix_oracle.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/rowfile.hpp"
#include "freeprob/series.hpp"
#include "freeprob/superconv.hpp"
#include "freeprob/transform.hpp"
#include "freeprob/version.hpp"
