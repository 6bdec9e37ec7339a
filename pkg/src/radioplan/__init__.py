"""What-if 5G radio planning toolkit.

Predicts KPIs (PRB utilization, uplink/downlink user throughput) for
candidate 5G cell placements from surrounding 4G cell monitoring data.
Cells become nodes of a geometric graph whose edges carry relative
position and orientation features; a message-passing neural network
(and a linear-regression baseline) predict the target-cell KPIs.
"""

__version__ = "0.1.0"
