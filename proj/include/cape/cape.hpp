#pragma once

#include "cape_protocol.hpp"
#include "datagen.hpp"
#include "dist_pca.hpp"
#include "dp_mech.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "otd.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "transcript.hpp"
