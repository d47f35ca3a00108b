#pragma once

#include "cpl/core.hpp"
#include "cpl/dataio.hpp"
#include "cpl/losses.hpp"
#include "cpl/metrics.hpp"
#include "cpl/model.hpp"
#include "cpl/paradigms.hpp"
#include "cpl/report.hpp"
#include "cpl/selection.hpp"
#include "cpl/trainer.hpp"
