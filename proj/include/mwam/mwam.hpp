#pragma once

#include "mwam/allocation.hpp"
#include "mwam/bench.hpp"
#include "mwam/config.hpp"
#include "mwam/dynamics.hpp"
#include "mwam/error.hpp"
#include "mwam/intervention.hpp"
#include "mwam/io.hpp"
#include "mwam/matrix.hpp"
#include "mwam/preference.hpp"
#include "mwam/random.hpp"
#include "mwam/scalar.hpp"
#include "mwam/spectral.hpp"
#include "mwam/synthdata.hpp"
#include "mwam/tinynet.hpp"
