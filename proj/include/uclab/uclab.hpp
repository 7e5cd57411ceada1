#pragma once

#include "uclab/bounds.hpp"
#include "uclab/common.hpp"
#include "uclab/config.hpp"
#include "uclab/experiments.hpp"
#include "uclab/geometry.hpp"
#include "uclab/grid.hpp"
#include "uclab/hamiltonian.hpp"
#include "uclab/io.hpp"
#include "uclab/spectral.hpp"
