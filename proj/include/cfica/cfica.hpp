#pragma once

#include "cfica/angles.hpp"
#include "cfica/atoms.hpp"
#include "cfica/bootstrap.hpp"
#include "cfica/common.hpp"
#include "cfica/csv.hpp"
#include "cfica/ecf.hpp"
#include "cfica/estimator.hpp"
#include "cfica/inference.hpp"
#include "cfica/kernel.hpp"
#include "cfica/quadrature.hpp"
#include "cfica/rng.hpp"
#include "cfica/simlab.hpp"
#include "cfica/simplex.hpp"
#include "cfica/svar.hpp"
