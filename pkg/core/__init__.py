# core包初始化文件
# 此目录包含命令行的公共部分：参数、配置、输出和模块加载
