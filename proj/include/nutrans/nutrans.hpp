#pragma once

#include "nutrans/errors.hpp"
#include "nutrans/grid.hpp"
#include "nutrans/matter.hpp"
#include "nutrans/kinetics.hpp"
#include "nutrans/parallel.hpp"
#include "nutrans/boltzmann.hpp"
#include "nutrans/idsa.hpp"
#include "nutrans/asymptotics.hpp"
#include "nutrans/report.hpp"
#include "nutrans/config.hpp"
