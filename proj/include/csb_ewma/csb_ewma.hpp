#pragma once

#include "chart.hpp"
#include "errors.hpp"
#include "moments.hpp"
#include "report_io.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "version.hpp"
#include "chart_io.hpp"
