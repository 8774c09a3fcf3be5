#pragma once

#include "cmsre/csv.hpp"
#include "cmsre/dataset.hpp"
#include "cmsre/eigen.hpp"
#include "cmsre/embedding.hpp"
#include "cmsre/error.hpp"
#include "cmsre/evaluation.hpp"
#include "cmsre/pipeline.hpp"
#include "cmsre/random.hpp"
#include "cmsre/sparse_coding.hpp"
#include "cmsre/synthetic.hpp"
