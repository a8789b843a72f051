#pragma once

#include "common.hpp"
#include "config.hpp"
#include "embed.hpp"
#include "exportio.hpp"
#include "geometry.hpp"
#include "gradcheck.hpp"
#include "losses.hpp"
#include "objective.hpp"
#include "optim.hpp"
#include "palette.hpp"
#include "parallel.hpp"
#include "pixelart.hpp"
#include "png_io.hpp"
#include "quantizer.hpp"
#include "renderer.hpp"
#include "trainer.hpp"
#include "voxgrid.hpp"
