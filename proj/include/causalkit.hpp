#pragma once

#include "causalkit/bias_demo.hpp"
#include "causalkit/contingency.hpp"
#include "causalkit/core.hpp"
#include "causalkit/data_io.hpp"
#include "causalkit/design_estimators.hpp"
#include "causalkit/iv.hpp"
#include "causalkit/matching.hpp"
#include "causalkit/mediation.hpp"
#include "causalkit/numerics.hpp"
#include "causalkit/propensity.hpp"
#include "causalkit/randomization.hpp"
#include "causalkit/rdd.hpp"
#include "causalkit/report_json.hpp"
#include "causalkit/sensitivity.hpp"
