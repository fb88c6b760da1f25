#pragma once

#include "hilomix/graph/features.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/graph/ingest.hpp"
#include "hilomix/graph/snapshot.hpp"
#include "hilomix/graph/split.hpp"
#include "hilomix/graph/stats.hpp"
#include "hilomix/graph/synthetic.hpp"
