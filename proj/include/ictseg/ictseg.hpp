#pragma once

#include "ictseg/checkpoint.hpp"
#include "ictseg/config.hpp"
#include "ictseg/dataset.hpp"
#include "ictseg/dataset_io.hpp"
#include "ictseg/errors.hpp"
#include "ictseg/grid.hpp"
#include "ictseg/metrics.hpp"
#include "ictseg/mixing.hpp"
#include "ictseg/net/architectures.hpp"
#include "ictseg/net/layers.hpp"
#include "ictseg/net/network.hpp"
#include "ictseg/net/params.hpp"
#include "ictseg/objective.hpp"
#include "ictseg/optim.hpp"
#include "ictseg/raster.hpp"
#include "ictseg/report_io.hpp"
#include "ictseg/rng.hpp"
#include "ictseg/sweep.hpp"
#include "ictseg/trainer.hpp"
