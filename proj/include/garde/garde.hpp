#pragma once

// Umbrella header.

#include "garde/core.hpp"
#include "garde/crlb.hpp"
#include "garde/engine.hpp"
#include "garde/io.hpp"
#include "garde/mds_init.hpp"
#include "garde/rng.hpp"
#include "garde/simulator.hpp"
#include "garde/wls_localizer.hpp"
