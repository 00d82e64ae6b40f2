#ifndef SMVFUSE_SMVFUSE_HPP
#define SMVFUSE_SMVFUSE_HPP

#include "smvfuse/config.hpp"
#include "smvfuse/dataset_io.hpp"
#include "smvfuse/fusion.hpp"
#include "smvfuse/geometry.hpp"
#include "smvfuse/image.hpp"
#include "smvfuse/metrics.hpp"
#include "smvfuse/multiview.hpp"
#include "smvfuse/parallel.hpp"
#include "smvfuse/pipeline.hpp"
#include "smvfuse/selection.hpp"
#include "smvfuse/synth.hpp"

#endif  // SMVFUSE_SMVFUSE_HPP
