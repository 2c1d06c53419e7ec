#pragma once

#include "ddpvf/cli.hpp"
#include "ddpvf/data_io.hpp"
#include "ddpvf/distributions.hpp"
#include "ddpvf/estimation.hpp"
#include "ddpvf/nonparametric.hpp"
#include "ddpvf/numeric.hpp"
#include "ddpvf/optimizer.hpp"
#include "ddpvf/regression.hpp"
#include "ddpvf/rng.hpp"
#include "ddpvf/simulation.hpp"
