# func包初始化文件
# 此目录包含各个命令模块，每个模块实现一个命令
# 模块应该提供get_info函数和execute函数，execute接收request_dict并返回Reply
