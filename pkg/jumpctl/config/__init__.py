'''
    default parameter dictionaries, one module per problem family;
    `jumpctl.utils.config.parse_config` merges base <- override <- document
'''
