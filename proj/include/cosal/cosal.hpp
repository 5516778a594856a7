#pragma once

#include "cosal/checkpoint.hpp"
#include "cosal/config.hpp"
#include "cosal/data.hpp"
#include "cosal/geometry.hpp"
#include "cosal/gradcheck.hpp"
#include "cosal/image_io.hpp"
#include "cosal/layers.hpp"
#include "cosal/losses.hpp"
#include "cosal/metrics.hpp"
#include "cosal/network.hpp"
#include "cosal/optim.hpp"
#include "cosal/parallel.hpp"
#include "cosal/roialign.hpp"
#include "cosal/sampling.hpp"
#include "cosal/tensor.hpp"
#include "cosal/trainer.hpp"
