#pragma once

#include "liprf/camera.hpp"
#include "liprf/checkpoint.hpp"
#include "liprf/common.hpp"
#include "liprf/config.hpp"
#include "liprf/field.hpp"
#include "liprf/fixtures.hpp"
#include "liprf/image.hpp"
#include "liprf/lipnet.hpp"
#include "liprf/metrics.hpp"
#include "liprf/optim.hpp"
#include "liprf/pst.hpp"
#include "liprf/render.hpp"
#include "liprf/scene_io.hpp"
#include "liprf/train.hpp"
#include "liprf/verify.hpp"
