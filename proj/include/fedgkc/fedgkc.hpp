#pragma once

#include "fedgkc/adam.hpp"
#include "fedgkc/errors.hpp"
#include "fedgkc/federation.hpp"
#include "fedgkc/graph.hpp"
#include "fedgkc/kama.hpp"
#include "fedgkc/louvain.hpp"
#include "fedgkc/models.hpp"
#include "fedgkc/partition.hpp"
#include "fedgkc/rng.hpp"
#include "fedgkc/smkd.hpp"
#include "fedgkc/sparse_matrix.hpp"
#include "fedgkc/tensor.hpp"
#include "fedgkc/io/config.hpp"
#include "fedgkc/io/dataset.hpp"
#include "fedgkc/io/outputs.hpp"
