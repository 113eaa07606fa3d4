// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/bayes.hpp"
#include "hbwave/core.hpp"
#include "hbwave/haar.hpp"
#include "hbwave/io.hpp"
#include "hbwave/metrics.hpp"
#include "hbwave/parallel.hpp"
#include "hbwave/pipeline.hpp"
#include "hbwave/synth.hpp"
#include "hbwave/timeseries.hpp"
#include "hbwave/unmix.hpp"
