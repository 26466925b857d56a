#pragma once

#include "alasso/error.hpp"
#include "alasso/rng.hpp"
#include "alasso/normal.hpp"
#include "alasso/parallel.hpp"
#include "alasso/dataset.hpp"
#include "alasso/estimators.hpp"
#include "alasso/inference.hpp"
#include "alasso/dgp.hpp"
#include "alasso/mc.hpp"
#include "alasso/report.hpp"
#include "alasso/config.hpp"
