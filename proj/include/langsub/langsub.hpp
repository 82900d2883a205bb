#pragma once

#include "langsub/error.hpp"
#include "langsub/tensor_io.hpp"
#include "langsub/subspace.hpp"
#include "langsub/synthetic.hpp"
#include "langsub/intervention.hpp"
#include "langsub/metrics.hpp"
#include "langsub/viz.hpp"
