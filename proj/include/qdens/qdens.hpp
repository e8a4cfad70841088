#pragma once

#include "qdens/cde.hpp"
#include "qdens/direction_numbers.hpp"
#include "qdens/errors.hpp"
#include "qdens/experiment.hpp"
#include "qdens/grid.hpp"
#include "qdens/kde.hpp"
#include "qdens/likelihood_ratio.hpp"
#include "qdens/network.hpp"
#include "qdens/normal.hpp"
#include "qdens/pointset.hpp"
#include "qdens/rng.hpp"
