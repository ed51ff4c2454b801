#pragma once

#include "spiralrep/augment.hpp"
#include "spiralrep/dataset.hpp"
#include "spiralrep/eval.hpp"
#include "spiralrep/resample.hpp"
#include "spiralrep/spiral.hpp"
#include "spiralrep/tensor_io.hpp"
#include "spiralrep/views.hpp"
#include "spiralrep/volume_io.hpp"
