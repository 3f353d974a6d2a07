#pragma once

#include "kws/costmodel.hpp"
#include "kws/errors.hpp"
#include "kws/frontend.hpp"
#include "kws/kernels.hpp"
#include "kws/model.hpp"
#include "kws/pipeline.hpp"
#include "kws/quant.hpp"
#include "kws/quantize_model.hpp"
#include "kws/sparsity.hpp"
#include "kws/wav.hpp"
#include "kws/weights_io.hpp"
