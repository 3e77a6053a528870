#pragma once

// Deterministic closed-loop artificial-pancreas testbed: virtual-patient
// glucose kinetics, insulin controllers, device models, fault injection,
// profile estimation and outcome analytics.

#include "apsim/analytics.hpp"
#include "apsim/campaign.hpp"
#include "apsim/cli.hpp"
#include "apsim/controllers.hpp"
#include "apsim/devices.hpp"
#include "apsim/errors.hpp"
#include "apsim/faults.hpp"
#include "apsim/io.hpp"
#include "apsim/loop.hpp"
#include "apsim/meal.hpp"
#include "apsim/mvp.hpp"
#include "apsim/presets.hpp"
#include "apsim/rng.hpp"
#include "apsim/sysid.hpp"
#include "apsim/units.hpp"
#include "apsim/uva.hpp"
