#pragma once

#include "x2g/common.hpp"
#include "x2g/eval.hpp"
#include "x2g/experiment.hpp"
#include "x2g/explain.hpp"
#include "x2g/gnn.hpp"
#include "x2g/kb.hpp"
#include "x2g/synth.hpp"
#include "x2g/tabular.hpp"
#include "x2g/tensor.hpp"
#include "x2g/trainer.hpp"
#include "x2g/x2graph.hpp"
