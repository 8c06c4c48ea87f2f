#pragma once

#include "eegoc/error.hpp"
#include "eegoc/sparse.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/mesh_io.hpp"
#include "eegoc/quadrature.hpp"
#include "eegoc/assembly.hpp"
#include "eegoc/observation.hpp"
#include "eegoc/solver.hpp"
#include "eegoc/kkt.hpp"
#include "eegoc/qrm.hpp"
#include "eegoc/analytic.hpp"
#include "eegoc/pipeline.hpp"
#include "eegoc/io.hpp"
#include "eegoc/config.hpp"
#include "eegoc/experiment.hpp"
#include "eegoc/runtime.hpp"
