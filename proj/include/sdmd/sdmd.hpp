#pragma once

// Umbrella header for the library (the CLI front end lives in sdmd/cli.hpp).

#include "sdmd/config.hpp"
#include "sdmd/csv.hpp"
#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/impact.hpp"
#include "sdmd/io.hpp"
#include "sdmd/koopman.hpp"
#include "sdmd/observables.hpp"
#include "sdmd/ridge.hpp"
#include "sdmd/rng.hpp"
#include "sdmd/structured.hpp"
#include "sdmd/synth.hpp"
#include "sdmd/types.hpp"
