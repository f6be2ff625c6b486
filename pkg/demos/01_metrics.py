"""
EER and MinDCF on a tiny trial list
===================================

Three target and three non-target scores, swept threshold by threshold.
"""

import numpy as np

from tdsv.metrics import MetricConfig, det_curve, evaluate

targets = [0.8, 0.6, 0.4]
nontargets = [0.7, 0.5, 0.3]

# every distinct score is a threshold; a trial is accepted when score >= threshold
det = det_curve(targets, nontargets)
print("threshold  p_miss  p_fa")
for point in det:
    print(f"{point.threshold:9.2f}  {point.p_miss:6.3f}  {point.p_fa:5.3f}")

# costs are normalized by min(C_miss * P_target, C_fa * (1 - P_target)) = 0.1
report = evaluate(targets, nontargets, MetricConfig(p_target=0.01, c_miss=10, c_fa=1))
print("EER    ", report.eer)
print("MinDCF ", report.min_dcf, "at threshold", report.min_dcf_threshold)
print("row    ", report.table_row())

# any strictly increasing map leaves both numbers alone
cubed = evaluate(np.power(targets, 3), np.power(nontargets, 3))
print("after cubing:", cubed.eer, cubed.min_dcf)
