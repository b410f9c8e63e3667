#pragma once

#include "topolab/autodiff.hpp"
#include "topolab/common.hpp"
#include "topolab/io.hpp"
#include "topolab/metrics.hpp"
#include "topolab/model.hpp"
#include "topolab/nn.hpp"
#include "topolab/optim.hpp"
#include "topolab/skeletonize.hpp"
#include "topolab/synth.hpp"
#include "topolab/topology.hpp"
#include "topolab/trainer.hpp"
#include "topolab/tree.hpp"
#include "topolab/volume.hpp"
