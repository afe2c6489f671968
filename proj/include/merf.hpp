#pragma once

#include "merf/assets.hpp"
#include "merf/bake.hpp"
#include "merf/bundle.hpp"
#include "merf/checkpoint.hpp"
#include "merf/contraction.hpp"
#include "merf/errors.hpp"
#include "merf/field.hpp"
#include "merf/fit.hpp"
#include "merf/grid.hpp"
#include "merf/mlp.hpp"
#include "merf/model.hpp"
#include "merf/occupancy.hpp"
#include "merf/parallel.hpp"
#include "merf/png.hpp"
#include "merf/quantization.hpp"
#include "merf/render.hpp"
#include "merf/scene.hpp"
#include "merf/sparse_grid.hpp"
#include "merf/vec.hpp"
