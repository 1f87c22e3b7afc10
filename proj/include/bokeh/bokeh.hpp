#pragma once

#include "bokeh/baseline.hpp"
#include "bokeh/bench.hpp"
#include "bokeh/blend.hpp"
#include "bokeh/blur.hpp"
#include "bokeh/error.hpp"
#include "bokeh/image.hpp"
#include "bokeh/image_io.hpp"
#include "bokeh/metrics.hpp"
#include "bokeh/parallel.hpp"
#include "bokeh/rng.hpp"
#include "bokeh/synthetic.hpp"
#include "bokeh/train.hpp"
#include "bokeh/weights.hpp"
