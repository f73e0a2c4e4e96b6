#pragma once

// Umbrella header for the morphopt library: mesh morphing optimization for
// reduced-order modeling of transport-dominated fields, plus the
// morphing-aware Gaussian-process surrogate built on top of it.

namespace morphopt {
inline constexpr const char* kVersion = "1.0.0";
}

#include "morphopt/config.hpp"
#include "morphopt/dataset.hpp"
#include "morphopt/elasticity.hpp"
#include "morphopt/energy.hpp"
#include "morphopt/error.hpp"
#include "morphopt/fem.hpp"
#include "morphopt/gp.hpp"
#include "morphopt/io.hpp"
#include "morphopt/locate.hpp"
#include "morphopt/log.hpp"
#include "morphopt/mesh.hpp"
#include "morphopt/ommgp.hpp"
#include "morphopt/optimizer.hpp"
#include "morphopt/parallel.hpp"
#include "morphopt/pod.hpp"
#include "morphopt/quadrature.hpp"
#include "morphopt/rbf.hpp"
#include "morphopt/sensitivity.hpp"
#include "morphopt/toy.hpp"
