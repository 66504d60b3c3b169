// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfuse/rng.hpp"
#include "radfuse/dual.hpp"
#include "radfuse/tensor.hpp"
#include "radfuse/params.hpp"
#include "radfuse/ops.hpp"
#include "radfuse/rtf.hpp"
#include "radfuse/geometry.hpp"
#include "radfuse/box.hpp"
#include "radfuse/iou.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/parallel.hpp"
#include "radfuse/voxel_encoder.hpp"
#include "radfuse/image.hpp"
#include "radfuse/pyramid.hpp"
#include "radfuse/deformable.hpp"
#include "radfuse/scene_fusion.hpp"
#include "radfuse/proposal_fusion.hpp"
#include "radfuse/eval_metrics.hpp"
#include "radfuse/jvp.hpp"
#include "radfuse/config.hpp"
#include "radfuse/io.hpp"
#include "radfuse/synth.hpp"
#include "radfuse/pipeline.hpp"
#include "radfuse/check_suite.hpp"
#include "radfuse/plot.hpp"
