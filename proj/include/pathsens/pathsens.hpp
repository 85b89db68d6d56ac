#pragma once

#include "pathsens/errors.hpp"
#include "pathsens/model.hpp"
#include "pathsens/parser.hpp"
#include "pathsens/ssa.hpp"
#include "pathsens/estimators.hpp"
#include "pathsens/structure.hpp"
#include "pathsens/meanfield.hpp"
#include "pathsens/spectrum.hpp"
#include "pathsens/builtin.hpp"
#include "pathsens/report.hpp"
