// Umbrella header.
#pragma once

#include "dscore/color.hpp"
#include "dscore/config.hpp"
#include "dscore/datagen.hpp"
#include "dscore/design.hpp"
#include "dscore/document_io.hpp"
#include "dscore/loss.hpp"
#include "dscore/metrics.hpp"
#include "dscore/perturbation.hpp"
#include "dscore/png.hpp"
#include "dscore/raster.hpp"
#include "dscore/refiner.hpp"
#include "dscore/scorer.hpp"
#include "dscore/sensitivity.hpp"
#include "dscore/train.hpp"
