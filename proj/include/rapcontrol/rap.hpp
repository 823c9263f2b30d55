#pragma once

// Umbrella header for the full library.

#include "rapcontrol/clustering.hpp"
#include "rapcontrol/distribution.hpp"
#include "rapcontrol/disturbance.hpp"
#include "rapcontrol/encode.hpp"
#include "rapcontrol/env.hpp"
#include "rapcontrol/experiment.hpp"
#include "rapcontrol/features.hpp"
#include "rapcontrol/fjs.hpp"
#include "rapcontrol/generator.hpp"
#include "rapcontrol/instance.hpp"
#include "rapcontrol/learner.hpp"
#include "rapcontrol/measure.hpp"
#include "rapcontrol/parallel.hpp"
#include "rapcontrol/schedule.hpp"
#include "rapcontrol/serialize.hpp"
#include "rapcontrol/svr.hpp"
#include "rapcontrol/value_store.hpp"
