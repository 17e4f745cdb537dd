# engine - 度量图、谱、特征函数与久期流形
