#pragma once

#include "gina/error.hpp"
#include "gina/autodiff.hpp"
#include "gina/adam.hpp"
#include "gina/distributions.hpp"
#include "gina/dataio.hpp"
#include "gina/model_spec.hpp"
#include "gina/models.hpp"
#include "gina/model_io.hpp"
#include "gina/synthdata.hpp"
#include "gina/evalsuite.hpp"
#include "gina/active.hpp"
#include "gina/experiments.hpp"
#include "gina/cli.hpp"
