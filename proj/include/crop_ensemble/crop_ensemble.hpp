#pragma once

// Dependency-light core. For file/video IO and the ONNX backend also include
// crop_ensemble/opencv_io.hpp and crop_ensemble/onnx_backend.hpp.

#include "crop_ensemble/annotate.hpp"
#include "crop_ensemble/boxcrop.hpp"
#include "crop_ensemble/datakit.hpp"
#include "crop_ensemble/ensemble.hpp"
#include "crop_ensemble/error.hpp"
#include "crop_ensemble/image.hpp"
#include "crop_ensemble/infer.hpp"
#include "crop_ensemble/pipeline.hpp"
#include "crop_ensemble/score.hpp"
