#pragma once

#include "gpa/checks.hpp"
#include "gpa/degree.hpp"
#include "gpa/equilibrium.hpp"
#include "gpa/error.hpp"
#include "gpa/fenwick.hpp"
#include "gpa/fitness.hpp"
#include "gpa/numeric.hpp"
#include "gpa/rng.hpp"
#include "gpa/simulate.hpp"
#include "gpa/space.hpp"
