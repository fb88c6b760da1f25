#pragma once

#include "hilomix/numerics/adam.hpp"
#include "hilomix/numerics/grad_check.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/ops.hpp"
#include "hilomix/numerics/sparse.hpp"
#include "hilomix/numerics/tape.hpp"
