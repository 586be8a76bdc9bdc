#pragma once

#include "shockfis/autoencoder.hpp"
#include "shockfis/baselines.hpp"
#include "shockfis/error.hpp"
#include "shockfis/error_maps.hpp"
#include "shockfis/filters.hpp"
#include "shockfis/fuzzy.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/metrics.hpp"
#include "shockfis/pipeline.hpp"
#include "shockfis/rng.hpp"
#include "shockfis/synthgen.hpp"
#include "shockfis/text_io.hpp"
