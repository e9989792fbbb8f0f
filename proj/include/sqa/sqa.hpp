// sqa/sqa.hpp  --  umbrella header.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_SQA_HPP_
#define SQA_SQA_HPP_

#include "sqa/audio.hpp"
#include "sqa/checkpoint.hpp"
#include "sqa/common.hpp"
#include "sqa/dsp.hpp"
#include "sqa/eval.hpp"
#include "sqa/fft.hpp"
#include "sqa/lstm.hpp"
#include "sqa/metrics.hpp"
#include "sqa/model.hpp"
#include "sqa/network.hpp"
#include "sqa/outliers.hpp"
#include "sqa/ratings.hpp"
#include "sqa/simulator.hpp"
#include "sqa/splits.hpp"
#include "sqa/stats.hpp"
#include "sqa/train.hpp"

#endif  // SQA_SQA_HPP_
