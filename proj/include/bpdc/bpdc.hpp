#pragma once

#include "bpdc/checkpoint.hpp"
#include "bpdc/dataset.hpp"
#include "bpdc/errors.hpp"
#include "bpdc/export.hpp"
#include "bpdc/glyphs.hpp"
#include "bpdc/inference.hpp"
#include "bpdc/math.hpp"
#include "bpdc/model.hpp"
#include "bpdc/multiplexer_net.hpp"
#include "bpdc/rng.hpp"
#include "bpdc/trainer.hpp"
