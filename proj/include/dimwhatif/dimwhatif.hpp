#pragma once

#include "dimwhatif/analysis.hpp"
#include "dimwhatif/autoencoder.hpp"
#include "dimwhatif/constraints.hpp"
#include "dimwhatif/dataset.hpp"
#include "dimwhatif/error.hpp"
#include "dimwhatif/feasibility.hpp"
#include "dimwhatif/idx.hpp"
#include "dimwhatif/model.hpp"
#include "dimwhatif/pca.hpp"
#include "dimwhatif/prolines.hpp"
#include "dimwhatif/qp.hpp"
#include "dimwhatif/rng.hpp"
#include "dimwhatif/session.hpp"
