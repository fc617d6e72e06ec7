// Umbrella header.
#pragma once

#include "nci/cli.hpp"
#include "nci/config.hpp"
#include "nci/dual.hpp"
#include "nci/errors.hpp"
#include "nci/expr.hpp"
#include "nci/geometry.hpp"
#include "nci/linalg.hpp"
#include "nci/nciverify.hpp"
#include "nci/numkernel.hpp"
#include "nci/random.hpp"
#include "nci/systems.hpp"
#include "nci/torusflow.hpp"
