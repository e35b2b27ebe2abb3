#pragma once

#include "pcenet/data.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/metrics.hpp"
#include "pcenet/mmd.hpp"
#include "pcenet/moments.hpp"
#include "pcenet/nncore.hpp"
#include "pcenet/pce.hpp"
#include "pcenet/pipeline.hpp"
#include "pcenet/rng.hpp"
#include "pcenet/serialize.hpp"
#include "pcenet/vae.hpp"
