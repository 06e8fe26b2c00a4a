#pragma once

#include "l0bound/applications.hpp"
#include "l0bound/bounds.hpp"
#include "l0bound/dataset.hpp"
#include "l0bound/errors.hpp"
#include "l0bound/model.hpp"
#include "l0bound/model_io.hpp"
#include "l0bound/parallel.hpp"
#include "l0bound/report_io.hpp"
#include "l0bound/sparse.hpp"
#include "l0bound/subspace.hpp"
#include "l0bound/tensor.hpp"
