#pragma once

#include "sevit/layers/dense.hpp"
#include "sevit/layers/lstm.hpp"
#include "sevit/layers/squeeze_excite.hpp"
#include "sevit/layers/vit_se_block.hpp"
