#pragma once

// Umbrella header: pulls in the whole toolkit.

#include "hcr/blocks.hpp"
#include "hcr/checkpoint.hpp"
#include "hcr/common.hpp"
#include "hcr/config.hpp"
#include "hcr/dataset.hpp"
#include "hcr/ensemble.hpp"
#include "hcr/gnt.hpp"
#include "hcr/grad_check.hpp"
#include "hcr/image.hpp"
#include "hcr/loss.hpp"
#include "hcr/model.hpp"
#include "hcr/ops.hpp"
#include "hcr/parallel.hpp"
#include "hcr/rng.hpp"
#include "hcr/tensor.hpp"
#include "hcr/trainer.hpp"
