#pragma once

#include "combts/error.hpp"
#include "combts/rng.hpp"
#include "combts/tensor.hpp"
#include "combts/autodiff.hpp"
#include "combts/ops.hpp"
#include "combts/optim.hpp"
#include "combts/dft.hpp"
#include "combts/gradcheck.hpp"
#include "combts/datasets.hpp"
#include "combts/transforms.hpp"
#include "combts/layers.hpp"
#include "combts/embeddings.hpp"
#include "combts/encoders.hpp"
#include "combts/decoder.hpp"
#include "combts/pipeline.hpp"
#include "combts/protocol.hpp"
#include "combts/stats.hpp"
#include "combts/harness.hpp"
