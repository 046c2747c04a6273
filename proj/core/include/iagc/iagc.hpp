#pragma once

#include "iagc/checkpoint.hpp"
#include "iagc/como_vit.hpp"
#include "iagc/config.hpp"
#include "iagc/dataset.hpp"
#include "iagc/errors.hpp"
#include "iagc/fusion.hpp"
#include "iagc/gamma.hpp"
#include "iagc/gradcheck.hpp"
#include "iagc/image_io.hpp"
#include "iagc/layers.hpp"
#include "iagc/loss.hpp"
#include "iagc/metrics.hpp"
#include "iagc/model.hpp"
#include "iagc/ops.hpp"
#include "iagc/optim.hpp"
#include "iagc/runtime.hpp"
#include "iagc/synth.hpp"
#include "iagc/tensor.hpp"
#include "iagc/threading.hpp"
#include "iagc/train.hpp"
