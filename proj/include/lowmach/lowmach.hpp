#pragma once

#include "errors.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "gas_closure.hpp"
#include "geometry.hpp"
#include "fem.hpp"
#include "force.hpp"
#include "incompressible.hpp"
#include "compressible.hpp"
#include "limit_lab.hpp"
#include "io.hpp"
#include "config.hpp"
