#pragma once

// Dynamic model averaging over time-varying-parameter regressions:
// discount-factor Kalman recursions on every predictor subset and discount
// grid point, mixed by one-step-ahead predictive likelihood.

#include "dma/backtest.hpp"
#include "dma/data_io.hpp"
#include "dma/dlm.hpp"
#include "dma/engine.hpp"
#include "dma/errors.hpp"
#include "dma/mixture.hpp"
#include "dma/model_space.hpp"
#include "dma/report.hpp"
#include "dma/simulate.hpp"
